from django.contrib import admin
from django.urls import re_path

from gamelab.views import RunDetailView


urlpatterns = [
    re_path(r'^run/(?P<id>\d+)/$', RunDetailView.as_view(), name="run_detail"),
    re_path(r'^', admin.site.urls)
]
