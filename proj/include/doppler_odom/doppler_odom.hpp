#pragma once

#include "doppler_odom/error.hpp"
#include "doppler_odom/geometry.hpp"
#include "doppler_odom/ego_velocity.hpp"
#include "doppler_odom/kinematics.hpp"
#include "doppler_odom/odometry.hpp"
#include "doppler_odom/simulator.hpp"
#include "doppler_odom/calibration.hpp"
#include "doppler_odom/io.hpp"
#include "doppler_odom/evaluation.hpp"
