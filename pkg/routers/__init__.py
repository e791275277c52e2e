# Routers package

