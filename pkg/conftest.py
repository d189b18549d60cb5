import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "ipcw_api.settings")
django.setup()
