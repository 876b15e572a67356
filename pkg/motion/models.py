from django.db import models
from django.utils import timezone
from django.conf import settings
import secrets


class EvaluationRun(models.Model):
    """Stored metrics report of one evaluated motion"""

    SOURCE_CHOICES = [
        ('cli', 'Command line'),
        ('api', 'API'),
    ]

    label = models.CharField(max_length=200, blank=True, help_text="Name of the evaluated motion (file name or client label)")
    reference_label = models.CharField(max_length=200, blank=True, help_text="Name of the reference motion")
    n_frames = models.PositiveIntegerField()
    protocol = models.CharField(max_length=50, help_text="Metric protocol tag the report was computed under")
    segment_len = models.PositiveIntegerField(default=100)
    report = models.JSONField(help_text="Full metrics report; unavailable metrics are null")
    source = models.CharField(max_length=10, choices=SOURCE_CHOICES, default='cli')
    api_key = models.ForeignKey('APIKey', on_delete=models.SET_NULL, null=True, blank=True, related_name='evaluations')
    created_at = models.DateTimeField(default=timezone.now)

    class Meta:
        ordering = ['-created_at', '-id']
        indexes = [
            models.Index(fields=['-created_at'], name='motion_eval_created_5b1e0c_idx'),
            models.Index(fields=['protocol', '-created_at'], name='motion_eval_protoco_9d47a2_idx'),
        ]

    def __str__(self):
        return f"{self.label or 'unnamed'} - {self.protocol} - {self.created_at.strftime('%Y-%m-%d %H:%M')}"

    @classmethod
    def record(cls, report, n_frames, label='', reference_label='', source='cli', api_key=None):
        """Store a report dict as produced by MetricsReport.to_dict()"""
        return cls.objects.create(
            label=label,
            reference_label=reference_label,
            n_frames=n_frames,
            protocol=report['protocol'],
            segment_len=report['segment_len'],
            report=report,
            source=source,
            api_key=api_key,
        )

    def metric(self, key):
        """Value of one metric, or None when it was unavailable"""
        return self.report.get(key)


class APIKey(models.Model):
    """API key for authenticating external applications"""

    name = models.CharField(max_length=100, help_text="Descriptive name for this API key (e.g., 'Capture Rig', 'Benchmark Runner')")
    key = models.CharField(max_length=64, unique=True, editable=False)
    is_active = models.BooleanField(default=True, help_text="Whether this API key is currently active")
    created_at = models.DateTimeField(auto_now_add=True)
    created_by = models.ForeignKey(settings.AUTH_USER_MODEL, on_delete=models.SET_NULL, null=True, blank=True)
    last_used_at = models.DateTimeField(null=True, blank=True, help_text="Last time this API key was used")

    class Meta:
        ordering = ['-created_at']
        verbose_name = "API Key"
        verbose_name_plural = "API Keys"

    def __str__(self):
        return f"{self.name} ({'Active' if self.is_active else 'Inactive'})"

    def save(self, *args, **kwargs):
        if not self.key:
            self.key = self.generate_key()
        super().save(*args, **kwargs)

    @staticmethod
    def generate_key():
        """Generate a secure random API key"""
        return secrets.token_urlsafe(48)
