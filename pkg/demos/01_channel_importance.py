"""
Channel importance scores from a pair of embeddings
====================================================

The importance of a channel is a share of a fixed budget: channels whose
values agree across the two embeddings take larger shares.  The scores
always sum to one, and each lies in [0, 1/(N-1)].
"""

import numpy as np

from sfam import EmbeddingVector, cis_cosine, cis_euclidean, normalize_weights

# two 8-channel embeddings that agree on channels 0-3 and disagree elsewhere
query = EmbeddingVector(np.array([1.0, 0.5, 0.2, 0.9, 3.0, 0.1, 2.0, 0.0], dtype=np.float32))
support = EmbeddingVector(np.array([1.0, 0.5, 0.2, 0.9, 0.5, 2.5, 0.2, 1.5], dtype=np.float32))

raw = cis_euclidean(query, support)
print("euclidean importance:", np.round(raw.values, 4))
print("sum of scores:       ", float(raw.values.sum()))

# the cosine variant scores the unit-normalized embeddings instead
raw_cos = cis_cosine(query, support)
print("cosine importance:   ", np.round(raw_cos.values, 4))

# max-min normalization stretches the scores to [0, 1] for heatmap weighting
norm = normalize_weights(raw)
print("display weights:     ", np.round(norm.values, 4))
print("agreeing channels take the top weights:", np.argsort(norm.values)[::-1][:4])
