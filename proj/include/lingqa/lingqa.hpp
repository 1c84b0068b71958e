#pragma once

#include "lingqa/common.hpp"
#include "lingqa/eval.hpp"
#include "lingqa/lingfeat.hpp"
#include "lingqa/model.hpp"
#include "lingqa/pipeline.hpp"
#include "lingqa/squad.hpp"
#include "lingqa/tensor.hpp"
#include "lingqa/tokenizer.hpp"
#include "lingqa/train.hpp"
#include "lingqa/vocab.hpp"
