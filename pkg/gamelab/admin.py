from django.contrib import admin
from django.utils.html import format_html

from .models import Experiment, Failure, Run


class ExperimentAdmin(admin.ModelAdmin):
    list_display = ("name", "created")


class RunAdmin(admin.ModelAdmin):
    list_display = ("experiment", "label", "algorithm", "seed", "status",
                    "iterations", "final_covered", "display_run_url")
    list_filter = ("algorithm", "status")

    def display_run_url(self, run):
        return format_html('<a href="{}">view</a>', run.get_absolute_url())


admin.site.register(Experiment, ExperimentAdmin)
admin.site.register(Failure)
admin.site.register(Run, RunAdmin)
