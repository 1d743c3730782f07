#pragma once

#include "crm/config.hpp"
#include "crm/designs.hpp"
#include "crm/error.hpp"
#include "crm/history.hpp"
#include "crm/likelihood.hpp"
#include "crm/model.hpp"
#include "crm/partition.hpp"
#include "crm/posterior.hpp"
#include "crm/prior.hpp"
#include "crm/random.hpp"
#include "crm/session.hpp"
#include "crm/simulator.hpp"
#include "crm/target.hpp"
