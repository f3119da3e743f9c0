#pragma once

#include "shufflebits/error.hpp"
#include "shufflebits/bitperm.hpp"
#include "shufflebits/keystream.hpp"
#include "shufflebits/tensor_codec.hpp"
#include "shufflebits/wire_format.hpp"
#include "shufflebits/attack_harness.hpp"
