#pragma once

#include "topicaudit/common.hpp"
#include "topicaudit/config.hpp"
#include "topicaudit/corpus.hpp"
#include "topicaudit/dp.hpp"
#include "topicaudit/eval.hpp"
#include "topicaudit/lda.hpp"
#include "topicaudit/lira.hpp"
#include "topicaudit/porter.hpp"
#include "topicaudit/stats.hpp"
#include "topicaudit/stopwords.hpp"
