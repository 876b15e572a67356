from django.contrib import admin
from django.utils.html import format_html
from .models import EvaluationRun, APIKey


def _metric_badge(value, good, fair, unit):
    """Green below good, amber below fair, red above; grey when unavailable"""
    if value is None:
        return format_html('<span style="color: #9ca3af;">n/a</span>')
    if value < good:
        color = '#10b981'
    elif value < fair:
        color = '#f59e0b'
    else:
        color = '#ef4444'
    return format_html(
        '<span style="background-color: {}; color: white; padding: 3px 10px; border-radius: 4px; font-size: 12px;">{} {}</span>',
        color,
        f'{value:.1f}',
        unit,
    )


@admin.register(EvaluationRun)
class EvaluationRunAdmin(admin.ModelAdmin):
    list_display = ['label', 'reference_label', 'n_frames', 'wa_mpjpe_badge', 'rte_badge', 'foot_sliding_badge', 'source', 'created_at']
    list_filter = ['protocol', 'source', 'created_at']
    search_fields = ['label', 'reference_label']
    readonly_fields = ['protocol', 'n_frames', 'segment_len', 'report', 'source', 'api_key', 'created_at']
    ordering = ['-created_at']
    date_hierarchy = 'created_at'

    fieldsets = (
        ('Evaluation', {
            'fields': ('label', 'reference_label', 'n_frames', 'protocol', 'segment_len')
        }),
        ('Report', {
            'fields': ('report',),
            'description': 'Metric values as computed; unavailable metrics are null and listed under "unavailable".'
        }),
        ('Metadata', {
            'fields': ('source', 'api_key', 'created_at'),
            'classes': ('collapse',)
        }),
    )

    def wa_mpjpe_badge(self, obj):
        return _metric_badge(obj.metric('wa_mpjpe_100_mm'), 100.0, 200.0, 'mm')

    wa_mpjpe_badge.short_description = 'WA-MPJPE'

    def rte_badge(self, obj):
        return _metric_badge(obj.metric('rte_percent'), 2.0, 5.0, '%')

    rte_badge.short_description = 'RTE'

    def foot_sliding_badge(self, obj):
        return _metric_badge(obj.metric('foot_sliding_mm'), 5.0, 15.0, 'mm')

    foot_sliding_badge.short_description = 'Foot sliding'


@admin.register(APIKey)
class APIKeyAdmin(admin.ModelAdmin):
    list_display = ['name', 'key_display', 'is_active', 'created_at', 'last_used_at', 'created_by']
    list_filter = ['is_active', 'created_at', 'last_used_at']
    search_fields = ['name', 'key']
    readonly_fields = ['key', 'created_at', 'last_used_at', 'created_by']
    ordering = ['-created_at']

    fieldsets = (
        ('API Key Information', {
            'fields': ('name', 'key', 'is_active')
        }),
        ('Metadata', {
            'fields': ('created_at', 'created_by', 'last_used_at'),
            'classes': ('collapse',)
        }),
    )

    def key_display(self, obj):
        """First 16 characters of the key"""
        if obj.key:
            return format_html(
                '<code style="background-color: #f3f4f6; padding: 4px 8px; border-radius: 4px; font-size: 12px;">{}...</code>',
                obj.key[:16]
            )
        return '—'

    key_display.short_description = 'API Key'

    def save_model(self, request, obj, form, change):
        if not change:
            obj.created_by = request.user
        super().save_model(request, obj, form, change)
