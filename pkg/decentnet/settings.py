from decouple import config, Csv
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='decentnet-local-only')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=Csv())

INSTALLED_APPS = [
    'rest_framework',
    'optim',
]

# No database: runs write CSV files, nothing is persisted through the ORM
DATABASES = {}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Solver defaults
# Priority: environment variable > .env file > default
OPTIM = {
    'GOSSIP_C': config('OPTIM_GOSSIP_C', default=0.5, cast=float),
    'DELTA': config('OPTIM_DELTA', default=1.0, cast=float),
    'THETA0': config('OPTIM_THETA0', default=1.0, cast=float),
    'D0': config('OPTIM_D0', default=1, cast=int),
    'MAX_ITERATIONS': config('OPTIM_MAX_ITERATIONS', default=50000, cast=int),
    'MAX_VECTOR_ROUNDS': config('OPTIM_MAX_VECTOR_ROUNDS', default=200000, cast=int),
    'TOLERANCE': config('OPTIM_TOLERANCE', default=1e-5, cast=float),
    'ORACLE_TOL': config('OPTIM_ORACLE_TOL', default=1e-8, cast=float),
    'ORACLE_MAX_ITER': config('OPTIM_ORACLE_MAX_ITER', default=10000, cast=int),
    'A3A_PATH': config('OPTIM_A3A_PATH', default=str(BASE_DIR / 'data' / 'a3a')),
    'SUITE_JOBS': config('OPTIM_SUITE_JOBS', default=1, cast=int),
}

LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
}
