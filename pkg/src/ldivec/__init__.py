"""Language-dependent i-vector modelling for spoken-language recognition."""
