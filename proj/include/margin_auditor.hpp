#pragma once

#include "margin_auditor/complexity.hpp"
#include "margin_auditor/covering.hpp"
#include "margin_auditor/data.hpp"
#include "margin_auditor/errors.hpp"
#include "margin_auditor/io.hpp"
#include "margin_auditor/linalg.hpp"
#include "margin_auditor/lowerbound.hpp"
#include "margin_auditor/margins.hpp"
#include "margin_auditor/network.hpp"
#include "margin_auditor/parallel.hpp"
#include "margin_auditor/random.hpp"
#include "margin_auditor/training.hpp"
