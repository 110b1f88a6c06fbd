from django.apps import AppConfig


class PedsAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'peds_app'
    verbose_name = 'Projective embedding of dynamical systems'
