# fieldtheory/models.py
from django.db import models


class ScenarioRun(models.Model):
    """One recorded invocation of run_scenario (opt-in via --record)."""
    scenario = models.CharField(max_length=40)
    seed = models.IntegerField()
    passed = models.BooleanField(default=False)
    config = models.JSONField(default=dict)
    summary = models.TextField(blank=True, default="")
    output_dir = models.CharField(max_length=500, blank=True, default="")
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at", "-id"]

    def __str__(self):
        status = "pass" if self.passed else "fail"
        return f"{self.scenario} (seed {self.seed}, {status})"
