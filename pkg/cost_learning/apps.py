from django.apps import AppConfig

class CostLearningConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'cost_learning'
