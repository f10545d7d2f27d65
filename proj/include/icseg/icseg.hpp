#pragma once

#include "icseg/checkpoint.hpp"
#include "icseg/config.hpp"
#include "icseg/dialogue.hpp"
#include "icseg/errors.hpp"
#include "icseg/evalkit.hpp"
#include "icseg/geometry.hpp"
#include "icseg/higrpo.hpp"
#include "icseg/io.hpp"
#include "icseg/observation.hpp"
#include "icseg/play.hpp"
#include "icseg/policy.hpp"
#include "icseg/pretrain.hpp"
#include "icseg/rewards.hpp"
#include "icseg/rng.hpp"
#include "icseg/scene.hpp"
#include "icseg/trajectory.hpp"
