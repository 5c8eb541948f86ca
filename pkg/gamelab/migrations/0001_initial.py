from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Experiment',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=255)),
                ('config_text', models.TextField(blank=True)),
                ('created', models.DateTimeField(auto_now_add=True)),
            ],
        ),
        migrations.CreateModel(
            name='Failure',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('label', models.CharField(max_length=255)),
                ('seed', models.IntegerField()),
                ('message', models.TextField(blank=True)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='failures', to='gamelab.experiment')),
            ],
        ),
        migrations.CreateModel(
            name='Run',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('label', models.CharField(max_length=255)),
                ('algorithm', models.CharField(choices=[('lll', 'LLL'), ('blll', 'BLLL'), ('psblll', 'PSBLLL'), ('ql', 'QL'), ('soql', 'SOQL')], max_length=16)),
                ('seed', models.IntegerField()),
                ('status', models.PositiveIntegerField(choices=[(0, 'Ran to the iteration limit'), (1, 'Stopped at steady state')])),
                ('iterations', models.PositiveIntegerField(default=0)),
                ('final_covered', models.FloatField(default=0.0)),
                ('final_potential', models.FloatField(default=0.0)),
                ('wall_time', models.FloatField(default=0.0)),
                ('csv_path', models.CharField(blank=True, max_length=1024)),
                ('svg_path', models.CharField(blank=True, max_length=1024)),
                ('experiment', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='runs', to='gamelab.experiment')),
            ],
        ),
    ]
