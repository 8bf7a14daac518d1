"""
Django settings for the spectral MPCA project.

The project has no web surface: Django provides the command-line
dispatcher (manage.py), settings, form validation for run configs,
logging configuration and the test runner.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals (signing); nothing here is served.
SECRET_KEY = os.environ.get(
    'SPECTRAL_MPCA_SECRET_KEY', 'spectral-mpca-offline-tool'
)

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'mpca.apps.MpcaConfig',
]

# No database: tests use SimpleTestCase and the tool writes plain files.
DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True

TIME_ZONE = 'UTC'


# Spectral MPCA runtime settings

# Worker threads for frequency loops and benchmark replicates.
# `--threads` wins over the environment; None means all cores.
SPECTRAL_MPCA_THREADS = (
    int(os.environ['SPECTRAL_MPCA_THREADS'])
    if os.environ.get('SPECTRAL_MPCA_THREADS') else None
)

# Scenario file used by `manage.py benchmark` when none is given.
SPECTRAL_MPCA_BENCHMARK_FILE = BASE_DIR / 'benchmark.json'


# Logging
# https://docs.djangoproject.com/en/5.1/topics/logging/

SPECTRAL_MPCA_LOG_LEVEL = os.environ.get('SPECTRAL_MPCA_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'mpca': {
            'handlers': ['console'],
            'level': SPECTRAL_MPCA_LOG_LEVEL,
            'propagate': False,
        },
    },
}
