# SPDX-License-Identifier: MIT-0

SERVICE_NAME = "cbfe_aif"

PROFILE_ENV_VAR = "CBFE_AIF_PROFILE"
THREADS_ENV_VAR = "CBFE_AIF_THREADS"
DEFAULT_PROFILE_NAME = "default"

# Constructors reject deviations above RENORMALIZE_TOLERANCE and rescale the rest
RENORMALIZE_TOLERANCE = 1e-9
TIE_TOLERANCE = 1e-9

DEFAULT_MAX_ITERS = 50
ENUMERATION_LIMIT = 10**7

CSV_FLOAT_FORMAT = "%.17g"
