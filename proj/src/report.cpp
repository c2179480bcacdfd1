// placeholder; filled in with the report module
