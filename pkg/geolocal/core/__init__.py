"""
Geolocal - commands
Every module here is scanned by the Session registry.
"""
