"""VSLBase / VSLNet span-based temporal localization on a from-scratch autodiff core."""

__version__ = "0.1.0"
