#pragma once

// Convenience header pulling in the whole library.

#include "swrec/baselines.hpp"
#include "swrec/config.hpp"
#include "swrec/core.hpp"
#include "swrec/dataset.hpp"
#include "swrec/diagnostics.hpp"
#include "swrec/eval.hpp"
#include "swrec/graph.hpp"
#include "swrec/grouping.hpp"
#include "swrec/ingest.hpp"
#include "swrec/lanczos.hpp"
#include "swrec/model_io.hpp"
#include "swrec/pipeline.hpp"
#include "swrec/spectral.hpp"
#include "swrec/structure.hpp"
#include "swrec/swdae.hpp"
#include "swrec/synth.hpp"
