# fieldtheory/apps.py
from django.apps import AppConfig

class FieldTheoryConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "fieldtheory"
    verbose_name = "Collar Field Theory Lab"
