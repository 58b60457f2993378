# fieldtheory/urls.py
from django.urls import path
from . import views

urlpatterns = [
    path("api/runs/", views.run_list, name="run_list"),
    path("api/runs/<int:pk>/", views.run_detail, name="run_detail"),
]
