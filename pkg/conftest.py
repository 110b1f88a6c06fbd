import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'PEDS_Simulation_Lab.settings')
django.setup()
