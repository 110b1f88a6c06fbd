"""
Django settings for PEDS_Simulation_Lab project.

The project has no database and no URL configuration: everything runs
through the ``peds`` management command of ``peds_app``.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""
from decouple import config
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='peds-local-development-key')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'peds_app',
]


# Database
# Simulations keep no state between runs.

DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Simulation settings

PEDS_OUTPUT_DIR = Path(config('PEDS_OUTPUT_DIR', default=str(BASE_DIR / 'output')))

PEDS_MAX_WORKERS = config('PEDS_MAX_WORKERS', default=4, cast=int)

PEDS_LOG_LEVEL = config('PEDS_LOG_LEVEL', default='INFO')

# Scenario config used when the command line gives no --config
PEDS_CONFIG_FILE = config('PEDS_CONFIG_FILE', default='')


# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {message}',
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
        'peds_app': {
            'handlers': ['console'],
            'level': PEDS_LOG_LEVEL,
            'propagate': False,
        },
    },
}
