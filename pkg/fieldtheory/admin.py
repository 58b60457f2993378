# fieldtheory/admin.py
from django.contrib import admin
from .models import ScenarioRun


@admin.register(ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    list_display = ("scenario", "seed", "passed", "created_at")
    list_filter = ("scenario", "passed")
    readonly_fields = ("scenario", "seed", "passed", "config", "summary", "output_dir", "created_at")
