from . import oms, views
