import hypothesis
import numpy as np

np.seterr(all="warn")

hypothesis.settings.register_profile(
    "ci", max_examples=25, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("ci")
