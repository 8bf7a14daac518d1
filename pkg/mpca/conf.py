# standard libraries
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional
# third party libraries
from django import forms
from django.conf import settings
from django.core.exceptions import ValidationError
# local libraries
from .simgen import SimConfig

AUTO = 'auto'

KERNEL_CHOICES = (
    ('epanechnikov', 'Epanechnikov'),
    ('gaussian', 'Gaussian'),
)

REFIT_CHOICES = (
    ('full', 'Refit the whole pipeline at every step'),
    ('scores_only', 'Refit scores and VAR with frozen filters'),
)


class AutoOrNumberField(forms.Field):
    """Accepts the string 'auto' or a number of the given kind."""

    def __init__(self, *, kind=float, min_value=None, exclusive_min=False, **kwargs):
        self.kind = kind
        self.min_value = min_value
        self.exclusive_min = exclusive_min
        kwargs.setdefault('required', False)
        kwargs.setdefault('initial', AUTO)
        super().__init__(**kwargs)

    def to_python(self, value):
        if value in (None, '', AUTO):
            return AUTO
        if isinstance(value, bool):
            raise ValidationError("Enter 'auto' or a number.", code='invalid')
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise ValidationError("Enter 'auto' or a number.", code='invalid')
        if self.kind is int:
            if number != int(number):
                raise ValidationError("Enter 'auto' or a whole number.", code='invalid')
            return int(number)
        return number

    def validate(self, value):
        super().validate(value)
        if value == AUTO or self.min_value is None:
            return
        if value < self.min_value or (self.exclusive_min and value == self.min_value):
            bound = 'greater than' if self.exclusive_min else 'greater than or equal to'
            raise ValidationError(
                f'Ensure this value is {bound} {self.min_value}.',
                code='min_value',
            )


class ConfigSectionForm(forms.Form):
    """A config section; absent keys take the field's initial value."""

    def resolved(self):
        data = {}
        for name, form_field in self.fields.items():
            value = self.cleaned_data.get(name)
            data[name] = form_field.initial if value is None else value
        return data


class GridsForm(ConfigSectionForm):
    M_t = forms.IntegerField(min_value=2, initial=51, required=False)
    M_omega = forms.IntegerField(min_value=2, initial=128, required=False)


class SmoothingForm(ConfigSectionForm):
    bandwidth = AutoOrNumberField(min_value=0, exclusive_min=True)
    kernel = forms.ChoiceField(choices=KERNEL_CHOICES, initial='epanechnikov', required=False)

    def clean_kernel(self):
        return self.cleaned_data['kernel'] or None


class SelectionForm(ConfigSectionForm):
    K = AutoOrNumberField(kind=int, min_value=1)
    K_max = forms.IntegerField(min_value=2, initial=5, required=False)
    epsilon = forms.FloatField(min_value=0, max_value=1, initial=0.1, required=False)
    L_max = forms.IntegerField(min_value=0, initial=5, required=False)
    h_max = AutoOrNumberField(kind=int, min_value=1)

    def clean_epsilon(self):
        epsilon = self.cleaned_data['epsilon']
        if epsilon is not None and not 0 < epsilon < 1:
            raise ValidationError('Ensure 0 < epsilon < 1.', code='invalid')
        return epsilon

    def clean(self):
        cleaned = super().clean()
        K, K_max = cleaned.get('K'), cleaned.get('K_max') or 5
        if K not in (None, AUTO) and K > K_max:
            self.add_error('K', f'K={K} exceeds K_max={K_max}.')
        return cleaned


class SolverForm(ConfigSectionForm):
    rtol = forms.FloatField(min_value=1e-15, max_value=1e-2, initial=1e-8, required=False)
    max_iter_factor = forms.IntegerField(min_value=1, initial=10, required=False)
    phase_tol = forms.FloatField(min_value=0, initial=1e-8, required=False)
    phase_max_iter = forms.IntegerField(min_value=1, initial=500, required=False)


class ForecastForm(ConfigSectionForm):
    P_max = AutoOrNumberField(kind=int, min_value=1)
    horizon = forms.IntegerField(min_value=1, initial=5, required=False)


class NmspeForm(ConfigSectionForm):
    refit = forms.ChoiceField(choices=REFIT_CHOICES, initial='full', required=False)

    def clean_refit(self):
        return self.cleaned_data['refit'] or None


class SimulationForm(ConfigSectionForm):
    case = forms.TypedChoiceField(
        choices=((1, 'Gaussian noise'), (2, 't noise'), (3, 'nonlinear scores')),
        coerce=int, initial=1, required=False, empty_value=None,
    )
    p = forms.IntegerField(min_value=1, initial=5, required=False)
    J = forms.IntegerField(min_value=2, initial=60, required=False)
    K = forms.IntegerField(min_value=1, initial=1, required=False)
    L = forms.IntegerField(min_value=0, initial=1, required=False)
    rho = forms.FloatField(initial=0.5, required=False)
    n_min = forms.IntegerField(min_value=1, initial=5, required=False)
    n_max = forms.IntegerField(min_value=1, initial=10, required=False)
    grid_size = forms.IntegerField(min_value=2, initial=31, required=False)
    noise_ratio = forms.FloatField(min_value=0, initial=0.1, required=False)
    kappa = forms.FloatField(min_value=0, initial=3.0, required=False)
    r1 = forms.FloatField(min_value=0, initial=0.1, required=False)
    r2 = forms.FloatField(min_value=0, initial=0.35, required=False)
    t_df = forms.FloatField(min_value=0, initial=5.0, required=False)
    horizon = forms.IntegerField(min_value=0, initial=0, required=False)
    burn_in = forms.IntegerField(min_value=0, initial=200, required=False)
    calibration_curves = forms.IntegerField(min_value=1, initial=2000, required=False)

    def clean(self):
        cleaned = super().clean()
        resolved = {
            name: cleaned.get(name) if cleaned.get(name) is not None else form_field.initial
            for name, form_field in self.fields.items()
        }
        if resolved['n_min'] > resolved['n_max']:
            self.add_error('n_min', 'n_min must not exceed n_max.')
        if resolved['n_max'] > resolved['grid_size']:
            self.add_error('n_max', 'n_max must not exceed grid_size.')
        if resolved['case'] in (1, 2) and not -1 < resolved['rho'] < 1:
            self.add_error('rho', 'rho must lie in (-1, 1) for linear score dynamics.')
        if resolved['kappa'] > resolved['p']:
            self.add_error('kappa', 'kappa must not exceed p.')
        if not 0 < resolved['r1'] < resolved['r2']:
            self.add_error('r1', 'Need 0 < r1 < r2.')
        if resolved['case'] == 2 and resolved['t_df'] <= 2:
            self.add_error('t_df', 't noise needs more than 2 degrees of freedom.')
        return cleaned


SECTIONS = {
    'grids': GridsForm,
    'smoothing': SmoothingForm,
    'selection': SelectionForm,
    'solver': SolverForm,
    'forecast': ForecastForm,
    'nmspe': NmspeForm,
    'simulation': SimulationForm,
}


@dataclass(frozen=True)
class RunConfig:
    grids: dict = field(default_factory=dict)
    smoothing: dict = field(default_factory=dict)
    selection: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    forecast: dict = field(default_factory=dict)
    nmspe: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    seed: int = 0
    threads: Optional[int] = None

    def as_dict(self):
        data = {name: dict(getattr(self, name)) for name in SECTIONS}
        data['seed'] = self.seed
        data['threads'] = self.threads
        return data

    @property
    def workers(self):
        """--threads, then SPECTRAL_MPCA_THREADS, then all cores."""
        return self.threads or getattr(settings, 'SPECTRAL_MPCA_THREADS', None) or os.cpu_count() or 1

    def sim_config(self, **overrides):
        values = dict(self.simulation, seed=self.seed)
        values.update(overrides)
        return SimConfig(**values)

    def replace(self, **changes):
        """Validated copy with ``{'section.field': value}`` or top-level changes."""
        return validate_config(apply_overrides(self.as_dict(), changes))


def _validate_scalar(name, value, errors):
    if name == 'seed':
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            errors['seed'] = ['Enter a nonnegative whole number.']
            return 0
        return value
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        errors['threads'] = ['Enter a whole number of at least 1, or null.']
        return None
    return value


def validate_config(data=None):
    """Validate a JSON-like mapping into a RunConfig.

    Errors are raised together as one ValidationError keyed by
    ``section.field``; unknown keys are rejected by name.
    """
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ValidationError({'config': ['The configuration must be a JSON object.']})
    errors = {}
    known = set(SECTIONS) | {'seed', 'threads'}
    for key in sorted(set(data) - known):
        errors[key] = ['Unknown configuration key.']
    resolved = {}
    for name, form_class in SECTIONS.items():
        section = data.get(name) or {}
        if not isinstance(section, dict):
            errors[name] = ['Expected a JSON object.']
            continue
        form = form_class(data=section)
        for key in sorted(set(section) - set(form.fields)):
            errors[f'{name}.{key}'] = ['Unknown configuration key.']
        if not form.is_valid():
            for field_name, messages in form.errors.items():
                errors[f'{name}.{field_name}'] = list(messages)
            continue
        resolved[name] = form.resolved()
    seed = _validate_scalar('seed', data.get('seed', 0), errors)
    threads = _validate_scalar('threads', data.get('threads'), errors)
    if errors:
        raise ValidationError(errors)
    return RunConfig(**resolved, seed=seed, threads=threads)


def parse_value(text):
    """Decode a --set value as JSON, falling back to the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides):
    data = json.loads(json.dumps(data or {}))
    for path, value in (overrides or {}).items():
        if '.' in path:
            section, key = path.split('.', 1)
            target = data.setdefault(section, {})
            if not isinstance(target, dict):
                raise ValidationError({section: ['Expected a JSON object.']})
            target[key] = value
        else:
            data[path] = value
    return data


def load_config(path=None, overrides=None, defaults=None):
    """Read a JSON config file (else ``defaults``) and apply flag overrides, flags winning."""
    data = defaults or {}
    if path:
        try:
            with open(path, encoding='utf-8') as handle:
                data = json.load(handle)
        except OSError as exc:
            raise ValidationError({'config': [f'Cannot read {path}: {exc.strerror}.']})
        except json.JSONDecodeError as exc:
            raise ValidationError({'config': [f'{path} is not valid JSON: {exc.msg}.']})
    return validate_config(apply_overrides(data, overrides))


EXECUTION_KEYS = ('threads',)


def config_hash(config):
    """SHA-256 of the canonical settings; execution-only keys are left out."""
    data = {key: value for key, value in config.as_dict().items() if key not in EXECUTION_KEYS}
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _field_schema(form_field):
    if isinstance(form_field, AutoOrNumberField):
        number = {'type': 'integer' if form_field.kind is int else 'number'}
        if form_field.min_value is not None:
            key = 'exclusiveMinimum' if form_field.exclusive_min else 'minimum'
            number[key] = form_field.min_value
        return {'oneOf': [{'const': AUTO}, number], 'default': AUTO}
    if isinstance(form_field, forms.ChoiceField):
        return {'enum': [value for value, _ in form_field.choices], 'default': form_field.initial}
    schema = {'type': 'integer' if isinstance(form_field, forms.IntegerField) else 'number'}
    for validator in form_field.validators:
        limit = getattr(validator, 'limit_value', None)
        code = getattr(validator, 'code', None)
        if code == 'min_value':
            schema['minimum'] = limit
        elif code == 'max_value':
            schema['maximum'] = limit
    schema['default'] = form_field.initial
    return schema


def config_schema():
    """JSON schema of the run configuration, generated from the forms."""
    properties = {}
    for name, form_class in SECTIONS.items():
        fields = form_class.base_fields
        properties[name] = {
            'type': 'object',
            'additionalProperties': False,
            'properties': {key: _field_schema(value) for key, value in fields.items()},
        }
    properties['seed'] = {'type': 'integer', 'minimum': 0, 'default': 0}
    properties['threads'] = {'oneOf': [{'type': 'null'}, {'type': 'integer', 'minimum': 1}], 'default': None}
    return {
        '$schema': 'https://json-schema.org/draft/2020-12/schema',
        'title': 'Spectral MPCA run configuration',
        'type': 'object',
        'additionalProperties': False,
        'properties': properties,
    }
