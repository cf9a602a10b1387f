# Empty init file for cascadeseg package
