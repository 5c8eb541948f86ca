from django.db import models
from django.urls import reverse

from .experiments import ALGORITHMS


class Experiment(models.Model):
    """
    One config file handed to the run or sweep command
    """

    name = models.CharField(max_length=255)
    config_text = models.TextField(blank=True)
    created = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return self.name


class Failure(models.Model):
    experiment = models.ForeignKey(Experiment, related_name="failures", on_delete=models.CASCADE)
    label = models.CharField(max_length=255)
    seed = models.IntegerField()
    message = models.TextField(blank=True)

    def __str__(self):
        return "{} / {} / seed {}".format(self.experiment, self.label, self.seed)


class RunManager(models.Manager):
    def create_from_record(self, experiment, record, label=None, csv_path="", svg_path=""):

        if record.steady:
            status = Run.STATUS_STEADY
        else:
            status = Run.STATUS_COMPLETE

        return self.create(
            experiment=experiment,
            label=label or record.config.label,
            algorithm=record.algorithm,
            seed=record.seed,
            status=status,
            iterations=record.iterations,
            final_covered=float(record.final_covered),
            final_potential=float(record.final_potential),
            wall_time=record.wall_time,
            csv_path=csv_path,
            svg_path=svg_path,
        )


class Run(models.Model):

    STATUS_COMPLETE = 0
    STATUS_STEADY = 1

    STATUS_CHOICES = (
        (STATUS_COMPLETE, "Ran to the iteration limit"),
        (STATUS_STEADY, "Stopped at steady state"),
    )

    ALGORITHM_CHOICES = tuple((name, name.upper()) for name in ALGORITHMS)

    experiment = models.ForeignKey(Experiment, related_name="runs", on_delete=models.CASCADE)
    label = models.CharField(max_length=255)
    algorithm = models.CharField(max_length=16, choices=ALGORITHM_CHOICES)
    seed = models.IntegerField()
    status = models.PositiveIntegerField(choices=STATUS_CHOICES)

    iterations = models.PositiveIntegerField(default=0)
    final_covered = models.FloatField(default=0.0)
    final_potential = models.FloatField(default=0.0)
    wall_time = models.FloatField(default=0.0)

    csv_path = models.CharField(max_length=1024, blank=True)
    svg_path = models.CharField(max_length=1024, blank=True)

    objects = RunManager()

    def __str__(self):
        return "{} / {} / seed {}".format(self.experiment, self.label, self.seed)

    def get_absolute_url(self):
        return reverse("run_detail", kwargs=dict(id=self.id))

    @property
    def steady(self):
        return self.status == Run.STATUS_STEADY
