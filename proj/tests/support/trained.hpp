#pragma once

// Default-config teacher and generator, trained once per test process.

#include "promptforge/genlab.hpp"
#include "promptforge/teacher.hpp"

namespace pftest {

inline const promptforge::teacher::PretrainedTeacher& trained_teacher() {
  static const auto t = promptforge::teacher::pretrain_teacher(
      promptforge::world::default_world(), {}, promptforge::numerics::RngStream(1, "teacher"));
  return t;
}

inline const promptforge::genlab::PretrainedGenerator& trained_generator() {
  static const auto g = promptforge::genlab::pretrain_generator(
      promptforge::world::default_world(), {}, promptforge::numerics::RngStream(1, "generator"));
  return g;
}

}  // namespace pftest
