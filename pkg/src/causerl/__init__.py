"""causerl: self-supervised causal representation learning plus contrastive
transfer into an event causality identifier, with a from-scratch tape
autodiff core sized for one CPU."""

__version__ = "0.1.0"
