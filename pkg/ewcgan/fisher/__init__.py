from .diagonal import FisherDiagonal, LayerFisher, Network, load_fisher, per_layer_mean, save_fisher
from .estimator import DEFAULT_SAMPLES, empirical_fisher, estimate_fisher, log_likelihood_proxy
