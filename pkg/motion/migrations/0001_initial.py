# Generated by Django 5.2.8 on 2026-10-19 09:12

import django.db.models.deletion
import django.utils.timezone
from django.conf import settings
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
        migrations.swappable_dependency(settings.AUTH_USER_MODEL),
    ]

    operations = [
        migrations.CreateModel(
            name='APIKey',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(help_text="Descriptive name for this API key (e.g., 'Capture Rig', 'Benchmark Runner')", max_length=100)),
                ('key', models.CharField(editable=False, max_length=64, unique=True)),
                ('is_active', models.BooleanField(default=True, help_text='Whether this API key is currently active')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('last_used_at', models.DateTimeField(blank=True, help_text='Last time this API key was used', null=True)),
                ('created_by', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, to=settings.AUTH_USER_MODEL)),
            ],
            options={
                'verbose_name': 'API Key',
                'verbose_name_plural': 'API Keys',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='EvaluationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('label', models.CharField(blank=True, help_text='Name of the evaluated motion (file name or client label)', max_length=200)),
                ('reference_label', models.CharField(blank=True, help_text='Name of the reference motion', max_length=200)),
                ('n_frames', models.PositiveIntegerField()),
                ('protocol', models.CharField(help_text='Metric protocol tag the report was computed under', max_length=50)),
                ('segment_len', models.PositiveIntegerField(default=100)),
                ('report', models.JSONField(help_text='Full metrics report; unavailable metrics are null')),
                ('source', models.CharField(choices=[('cli', 'Command line'), ('api', 'API')], default='cli', max_length=10)),
                ('created_at', models.DateTimeField(default=django.utils.timezone.now)),
                ('api_key', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='evaluations', to='motion.apikey')),
            ],
            options={
                'ordering': ['-created_at', '-id'],
                'indexes': [models.Index(fields=['-created_at'], name='motion_eval_created_5b1e0c_idx'), models.Index(fields=['protocol', '-created_at'], name='motion_eval_protoco_9d47a2_idx')],
            },
        ),
    ]
