#pragma once

#include "qaemb/datagen.hpp"
#include "qaemb/error.hpp"
#include "qaemb/evalkit.hpp"
#include "qaemb/finetune.hpp"
#include "qaemb/kb.hpp"
#include "qaemb/lbfgs.hpp"
#include "qaemb/model.hpp"
#include "qaemb/model_io.hpp"
#include "qaemb/ranker.hpp"
#include "qaemb/text.hpp"
#include "qaemb/trainer.hpp"
