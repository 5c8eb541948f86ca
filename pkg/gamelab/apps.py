# -*- coding: utf-8 -*-
from django.apps import AppConfig


class GamelabConfig(AppConfig):
    name = 'gamelab'
    verbose_name = "Potential-game learning lab"
