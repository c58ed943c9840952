"""On-disk formats: images, depth maps, weight archives, manifests and colormaps.

Import the submodules directly; ``dataset`` depends on ``augment``, which
itself uses ``imaging``.
"""
