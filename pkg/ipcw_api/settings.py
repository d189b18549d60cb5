"""
Django settings for ipcw_api project.
"""

from pathlib import Path

from decouple import config

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('DJANGO_SECRET_KEY', default='django-insecure-change-this-in-production')

DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = ['*']

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'corsheaders',
    'censored_glm',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'corsheaders.middleware.CorsMiddleware',
    'django.middleware.common.CommonMiddleware',
]

ROOT_URLCONF = 'ipcw_api.urls'

WSGI_APPLICATION = 'ipcw_api.wsgi.application'

# Nothing is persisted; estimation runs entirely in memory.
DATABASES = {}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

CORS_ALLOW_ALL_ORIGINS = True

REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
    'DEFAULT_PARSER_CLASSES': [
        'rest_framework.parsers.JSONParser',
    ],
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
    'UNAUTHENTICATED_USER': None,
}

LOG_LEVEL = config('LOG_LEVEL', default='WARNING')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'censored_glm': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# GLM solver
GLM_TOLERANCE = config('GLM_TOLERANCE', default=1e-8, cast=float)
GLM_MAX_ITER = config('GLM_MAX_ITER', default=100, cast=int)
GLM_MAX_HALVINGS = config('GLM_MAX_HALVINGS', default=20, cast=int)
GLM_DIVERGENCE_NORM = config('GLM_DIVERGENCE_NORM', default=50.0, cast=float)

# Cox partial likelihood
COX_TOLERANCE = config('COX_TOLERANCE', default=1e-8, cast=float)
COX_MAX_ITER = config('COX_MAX_ITER', default=100, cast=int)
COX_MAX_HALVINGS = config('COX_MAX_HALVINGS', default=20, cast=int)
COX_DIVERGENCE_NORM = config('COX_DIVERGENCE_NORM', default=50.0, cast=float)
COX_DIVERGENCE_PATIENCE = config('COX_DIVERGENCE_PATIENCE', default=5, cast=int)
# "product" is the discrete product-limit form, "exponential" uses exp(-Lambda)
COX_SURVIVAL_FORM = config('COX_SURVIVAL_FORM', default='product')

# Censoring weights
WEIGHT_FLOOR = config('WEIGHT_FLOOR', default=1e-6, cast=float)
WEIGHT_SIDEDNESS = config('WEIGHT_SIDEDNESS', default='left')

# Monte Carlo harness
SIM_DEFAULT_REPS = config('SIM_DEFAULT_REPS', default=1000, cast=int)
SIM_FULL_SCALE_REPS = 5000
SIM_WORKERS = config('SIM_WORKERS', default=1, cast=int)
CALIBRATION_DRAWS = config('CALIBRATION_DRAWS', default=100_000, cast=int)

OUTPUT_PRECISION = config('OUTPUT_PRECISION', default=4, cast=int)

RUN_SLOW_TESTS = config('RUN_SLOW_TESTS', default=False, cast=bool)
