#pragma once

#include "topomatch/baselines.hpp"
#include "topomatch/candidates.hpp"
#include "topomatch/checkpoint.hpp"
#include "topomatch/config.hpp"
#include "topomatch/edit_distance.hpp"
#include "topomatch/errors.hpp"
#include "topomatch/eval.hpp"
#include "topomatch/gazetteer.hpp"
#include "topomatch/model.hpp"
#include "topomatch/pairgen.hpp"
#include "topomatch/pairs.hpp"
#include "topomatch/preprocess.hpp"
#include "topomatch/ranker.hpp"
#include "topomatch/rng.hpp"
#include "topomatch/text.hpp"
#include "topomatch/trainer.hpp"
#include "topomatch/tsv.hpp"
