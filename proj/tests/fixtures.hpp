#pragma once

#include <vector>

#include "mtdeblur/dataset.hpp"
#include "mtdeblur/model.hpp"

// Small scenes and a narrow model keep trainer tests fast.
inline mtdeblur::DatasetSpec small_dataset_spec(int train = 4, int val = 2, int test = 4) {
  mtdeblur::DatasetSpec spec;
  spec.scene.height = 16;
  spec.scene.width = 16;
  spec.scene.supersample = 1;
  spec.train_scenes = train;
  spec.val_scenes = val;
  spec.test_scenes = test;
  spec.global_seed = 99;
  return spec;
}

inline std::vector<mtdeblur::Scene> scenes_of(const std::vector<mtdeblur::Scene>& all,
                                              mtdeblur::Split split) {
  std::vector<mtdeblur::Scene> out;
  for (const auto& s : all) {
    if (s.record.split == split) out.push_back(s);
  }
  return out;
}

inline mtdeblur::ModelConfig small_model() {
  mtdeblur::ModelConfig config;
  config.base_channels = 4;
  config.resblocks_per_stage = 1;
  return config;
}
