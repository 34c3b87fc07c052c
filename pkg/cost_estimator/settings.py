# cost_estimator/settings.py
import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('SECRET_KEY', 'clave-123')
DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'rest_framework',
    'cost_learning',
]

# Database (solo para los manifiestos de cada ejecución)
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

# Internationalization
LANGUAGE_CODE = 'es-es'
TIME_ZONE = 'America/Mexico_City'
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Aprendizaje de costos
MOIRL = {
    'VERSION': '1.0.0',
    'PRESETS_DIR': BASE_DIR / 'cost_learning' / 'presets',
    'OUTPUT_DIR': Path(os.environ.get('MOIRL_OUTPUT_DIR', BASE_DIR / 'runs')),
    'N_JOBS': int(os.environ.get('MOIRL_N_JOBS', '1')),
    'SOLVER': {
        'max_iterations': 100,
        'cost_tolerance': 1e-9,
        'initial_regularization': 1e-6,
        'regularization_growth': 10.0,
        'regularization_shrink': 2.0,
        'min_regularization': 1e-9,
        'max_regularization': 1e9,
        'line_search_steps': 10,
        'line_search_shrink': 0.5,
    },
    'IRL': {
        'window_L': 1,
        'subsamples_N': 20,
        'lambda_l1': 1e-6,
        'beta_l2': 1e-2,
        'wolfe_c1': 1e-4,
        'wolfe_c2': 0.9,
        'alpha_shrink': 0.25,
        'max_step_trials': 10,
        'w_init_value': 0.01,
        'weight_upper_bound': None,
        'max_outer_iterations': 100,
        'm2_convergence_tol': 1e-3,
        'inner_max_iterations': 500,
        'inner_step_tol': 1e-8,
        'box_epsilon': 1e-9,
        'step_acceptance': True,
        'warm_start': False,
    },
}

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG' if DEBUG else 'INFO',
            'class': 'logging.StreamHandler',
            'formatter': 'verbose' if DEBUG else 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING' if not DEBUG else 'INFO',
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'cost_learning': {
            'handlers': ['console'],
            'level': 'DEBUG' if DEBUG else 'INFO',
            'propagate': False,
        },
    },
}
