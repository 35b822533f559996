#pragma once

#include <string>
#include <string_view>

#include "mrinet/network.hpp"

namespace mrinet {

enum class Scale { full, mini };
enum class NormKind { lrn, batchnorm };

// Five convolutions (ReLU after each, max pooling after conv1, conv2, conv5)
// followed by three fully connected layers and softmax cross-entropy.
// Grayscale input. Scale selects a width table:
//   full: 227x227 input, conv 96/256/384/384/256, fc 4096/4096
//   mini:  64x64 input, conv 12/32/48/48/32,      fc 256/128, conv1 pad 2
NetworkSpec build_alexnet(int num_classes, Scale scale);

// build_alexnet plus one node "norm5" between pool5 and fc6.
// NormKind::lrn carries local_size 5, alpha 0.0001, beta 0.75.
NetworkSpec build_alexnet_optimized(int num_classes, Scale scale, NormKind norm = NormKind::lrn);

// Removes a node and reconnects its consumer to the node's bottom.
NetworkSpec remove_node(const NetworkSpec& spec, std::string_view name);

// Weight-sharing illustration: a 1000x1000 image feeding 1M hidden units,
// densely (one weight per pixel per unit) or through private 10x10 receptive
// fields. No biases.
NetworkSpec receptive_field_dense_spec();
NetworkSpec receptive_field_local_spec();

// Caffe-prototxt-style text dump, one `layer { ... }` block per node.
std::string to_prototxt(const NetworkSpec& spec);

}  // namespace mrinet
