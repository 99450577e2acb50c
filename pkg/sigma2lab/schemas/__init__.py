# Schema definitions for grid functions, spectra and experiment reports
