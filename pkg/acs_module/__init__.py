# Adaptive contrastive search and baseline decoders.
#
#   prob_core       entropy, standardized entropy and the k / alpha schedules
#   representation  cosine similarity and the degeneration penalty
#   backend         model interface, synthetic model, line-protocol adapter
#   decoders        greedy, top-k, nucleus, typical, contrastive, adaptive contrastive
#   metrics         diversity, coherence, speed
__version__ = "0.3.0"
