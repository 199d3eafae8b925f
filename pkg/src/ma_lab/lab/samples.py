"""Sampled sections shared by the lemma checks."""
import logging

import numpy as np

from ..errors import DegenerateBody, EscapesDomain
from ..sections.atlas import sample_centers
from ..sections.section import as_function
from .normalize import NormalizedSolution, normalize_section

log = logging.getLogger(__name__)

HEIGHT_FRACTIONS = (1.0, 0.5, 0.25)


def unit_regions(domain, center=None):
    """U/2 and 3U/4 as dilations of ``domain`` about ``center`` (default: the
    origin, which is the John center of a normalized domain)."""
    c = np.zeros(domain.dim) if center is None else np.asarray(center, float)
    return domain.dilate(0.5, c), domain.dilate(0.75, c)


def sample_sections(u, inner, rho, count=100, seed=0,
                    fractions=HEIGHT_FRACTIONS):
    """(node, t) pairs: ``count`` quasi-random centers in ``inner`` times the
    heights ``rho * fractions``."""
    centers = sample_centers(u, inner, count, seed)
    return [(int(i), rho * f) for i in centers for f in fractions]


def normalized(u, samples):
    """NormalizedSolution per sample; sections that escape or degenerate are
    skipped.  Returns ``(list, skipped)``."""
    u = as_function(u)
    out, skipped = [], []
    for s in samples:
        if isinstance(s, NormalizedSolution):
            out.append(s)
            continue
        i, t = s
        try:
            out.append(normalize_section(u, i, t))
        except (EscapesDomain, DegenerateBody) as exc:
            skipped.append((i, t, type(exc).__name__))
    if skipped:
        log.info("skipped %d of %d sections", len(skipped), len(samples))
    return out, skipped
