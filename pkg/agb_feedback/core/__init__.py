"""Channel, codebook, pattern, AGB, precoder and analysis modules"""
