"""McKean-Vlasov equations driven by alpha-stable noise with Lebesgue-Besov interaction kernels."""

__version__ = "0.1.0"
