from django.db import models


class RunManifest(models.Model):
    command = models.CharField(max_length=32)
    preset_name = models.CharField(max_length=255, blank=True)
    tool_version = models.CharField(max_length=32)
    config = models.JSONField(default=dict)
    started_at = models.DateTimeField()
    finished_at = models.DateTimeField()
    termination_reason = models.CharField(max_length=64, blank=True)
    output_paths = models.JSONField(default=dict)

    class Meta:
        ordering = ['-started_at']

    def __str__(self):
        return f"Run: {self.command} {self.preset_name}"
