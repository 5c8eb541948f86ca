import os

from django.views.generic.base import TemplateView
from django.shortcuts import get_object_or_404

from .models import Run


class RunDetailView(TemplateView):
    template_name = "run_detail.html"

    def get_context_data(self, **kwargs):
        context = super(RunDetailView, self).get_context_data(**kwargs)

        run = get_object_or_404(Run, pk=self.kwargs["id"])
        context["run"] = run

        if run.svg_path and os.path.exists(run.svg_path):
            with open(run.svg_path) as handle:
                context["svg"] = handle.read()

        return context
