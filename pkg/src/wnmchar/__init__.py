"""Write-noise-margin characterization of aged, process-varied flip-flops."""
__version__ = "0.1.0"
