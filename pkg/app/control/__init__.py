# Control synthesis package
