// placeholder; filled in with the covariant phase-space module
