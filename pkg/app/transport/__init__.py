# Transport package
