#pragma once

#include "bounding.hpp"
#include "chart_grammar.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "gibbs.hpp"
#include "grammar.hpp"
#include "inside.hpp"
#include "pioc.hpp"
#include "position.hpp"
#include "random.hpp"
#include "treebank.hpp"
