# Flushing profile package
