from django.apps import AppConfig


class MpcaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'mpca'
    verbose_name = 'Spectral marginal principal component analysis'
