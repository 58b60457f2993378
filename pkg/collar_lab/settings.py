# collar_lab/settings.py
import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "unsafe-dev-key")
DEBUG = os.getenv("DEBUG", "True") == "True"
ALLOWED_HOSTS = [h.strip() for h in os.getenv("ALLOWED_HOSTS", "").split(",") if h.strip()] or ["*"]

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    "rest_framework",
    "fieldtheory",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
]

ROOT_URLCONF = "collar_lab.urls"
WSGI_APPLICATION = "collar_lab.wsgi.application"
ASGI_APPLICATION = "collar_lab.asgi.application"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,  # admin templates
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.debug",
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    }
]

# Database (SQLite default), only used for the optional run history
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": str(BASE_DIR / "db.sqlite3"),
    }
}

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = True
USE_TZ = True

STATIC_URL = "/static/"
STATIC_ROOT = BASE_DIR / "staticfiles"

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

REST_FRAMEWORK = {
    "DEFAULT_PERMISSION_CLASSES": ["rest_framework.permissions.AllowAny"],
    "DEFAULT_AUTHENTICATION_CLASSES": ["rest_framework.authentication.SessionAuthentication"],
}

FIELDLAB_LOG_LEVEL = os.getenv("FIELDLAB_LOG_LEVEL", "WARNING").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "fieldtheory": {
            "handlers": ["console"],
            "level": FIELDLAB_LOG_LEVEL,
            "propagate": False,
        },
    },
}

# Lab-wide defaults for the run_scenario command
FIELDLAB = {
    "output_dir": os.getenv("FIELDLAB_OUTPUT_DIR", str(BASE_DIR / "runs")),
    "default_seed": 0,
    "tolerances": {
        "residual": 1e-10,
        "variational": 1e-6,
        "slope": 0.2,
        "isotropy": 1e-8,
        "gauge": 1e-12,
        "energy_drift": 1e-6,
        "order": 0.3,
        "lagrange": 1e-8,
        "identity": 1e-12,
    },
    "scenarios": {
        "ym-evolve": {
            "algebra": {"kind": "su2"},
            "mesh": {"sites": [8, 8], "length": 1.0, "n_t": 4},
            "run": {"steps": 40},
            "dynamics": {"coupling": 0.1},
        },
        "palatini-evolve": {
            "algebra": {"kind": "so", "dim": 2},
            "mesh": {"sites": [6, 6], "length": 1.0, "n_t": 4},
            "run": {"steps": 20, "projection": True},
            "dynamics": {"amplitude": 0.0},
        },
        "pca-analyze": {
            "algebra": {"kind": "so", "dim": 1},
            "mesh": {"sites": [3], "length": 1.0, "n_t": 4},
            "run": {"steps": 0},
            "dynamics": {},
        },
        "check-invariants": {
            "algebra": {"kind": "su2"},
            "mesh": {"sites": [4, 4], "length": 1.0, "n_t": 4},
            "run": {"steps": 0},
            "dynamics": {"amplitude": 0.1},
        },
        "lambda-sweep": {
            "algebra": {"kind": "su2"},
            "mesh": {"sites": [6, 6], "length": 1.0, "n_t": 4},
            "run": {"steps": 20},
            "dynamics": {"lambdas": [1.0, 0.1, 0.01], "amplitude": 0.1},
        },
        "reduction-report": {
            "algebra": {"kind": "su2"},
            "mesh": {"sites": [4, 4], "length": 1.0, "n_t": 4},
            "run": {"steps": 0, "samples": 10},
            "dynamics": {"amplitude": 0.1},
        },
    },
}
