#pragma once

#include "eenas/netspec.hpp"

namespace eenas {

/// Stem conv (3->16, k3, stride 1) followed by the 4 genome stages; each
/// stage opens with a stride-2 block, block = conv + relu. Final head:
/// flatten + dense to the class count. Pure function of the genome.
EennSpec decode_genome(const Genome& g, int classes = 10, int input_size = 16, int input_ch = 3);

/// Exit head on a [ch, h, w] feature map: conv(ch->16, k3, pad 1) + relu,
/// classifier flatten + dense -> classes, confidence flatten + dense -> 1 +
/// sigmoid on the shared conv features.
ExitSpec build_eec(int attach_block, int feat_ch, int feat_h, int feat_w, int classes);

/// Attaches an exit after block max(1, floor(j*L/max_exits)) for each set
/// theta bit, shifting duplicates one block later (capped at L-1), then
/// repairs cost ordering from the second-last exit down: a violating exit
/// gets the minimal max-pooling window that restores gamma_i <= gamma_{i+1};
/// if no window suffices the head's conv is dropped as well. Fills gamma.
EennSpec place_exits(const EennSpec& backbone_only, const std::vector<int>& theta, int max_exits);

/// gamma_i = backbone prefix MACs up to the attach point + exit head MACs;
/// the final entry covers the whole backbone plus the final head.
std::vector<double> gamma_vector(const EennSpec& spec);

}  // namespace eenas
