"""
Computational services: the numeric core (nncore, layers, training), the
tiny transformers (textenc), both task pipelines (track1, track2), the
regression backends and the metrics. Import the submodules directly.
"""
