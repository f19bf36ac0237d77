# Annulus MHD control lab package
