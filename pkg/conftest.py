import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'decentnet.settings')
django.setup()
