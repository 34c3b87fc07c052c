# Generated by Django 5.2.6 on 2026-10-17 18:55

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunManifest',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=32)),
                ('preset_name', models.CharField(blank=True, max_length=255)),
                ('tool_version', models.CharField(max_length=32)),
                ('config', models.JSONField(default=dict)),
                ('started_at', models.DateTimeField()),
                ('finished_at', models.DateTimeField()),
                ('termination_reason', models.CharField(blank=True, max_length=64)),
                ('output_paths', models.JSONField(default=dict)),
            ],
            options={
                'ordering': ['-started_at'],
            },
        ),
    ]
