#pragma once

#include <string>

#include "mtlab/graph.hpp"

namespace mtlab {

/// ConvLSTM cell state handles within a graph.
struct ConvLstmState {
  int hidden;  // [C,H,W]
  int cell;    // [C,H,W]
};

/// One ConvLSTM step: 3x3 convolution over [input || hidden] producing the
/// four gates stacked as [i; f; o; g] channel groups, sigmoid on i/f/o,
/// tanh candidate, c' = f.c + i.g, h' = o.tanh(c').
///
/// kernel leaf shape: [4C, C_in + C, 3, 3], bias leaf shape: [4C].
/// Returns {h', c'}; the step output is h'.
inline ConvLstmState conv_lstm_step(GraphBuilder& b, int input, ConvLstmState state, int kernel,
                                    int bias, int64_t hidden_channels) {
  const Shape& hs = b.shape_of(state.hidden);
  if (hs.size() != 3 || hs[0] != hidden_channels)
    throw std::invalid_argument("conv_lstm_step: state shape " + shape_str(hs) + " does not match " +
                                std::to_string(hidden_channels) + " hidden channels");
  if (b.shape_of(state.cell) != hs)
    throw std::invalid_argument("conv_lstm_step: hidden and cell shapes differ");
  const Shape& is = b.shape_of(input);
  if (is.size() != 3 || is[1] != hs[1] || is[2] != hs[2])
    throw std::invalid_argument("conv_lstm_step: input spatial size " + shape_str(is) +
                                " does not match state " + shape_str(hs));

  const int stacked = b.concat_channels({input, state.hidden});
  const int gates = b.conv2d(stacked, kernel, bias, /*stride=*/1, /*pad=*/1);
  const int c = static_cast<int>(hidden_channels);
  const int i_gate = b.sigmoid(b.slice_channels(gates, 0, c));
  const int f_gate = b.sigmoid(b.slice_channels(gates, c, 2 * c));
  const int o_gate = b.sigmoid(b.slice_channels(gates, 2 * c, 3 * c));
  const int g_cand = b.tanh(b.slice_channels(gates, 3 * c, 4 * c));

  const int new_cell = b.add(b.mul(f_gate, state.cell), b.mul(i_gate, g_cand));
  const int new_hidden = b.mul(o_gate, b.tanh(new_cell));
  return {new_hidden, new_cell};
}

/// Zero-initialized ConvLSTM state as constant graph nodes.
inline ConvLstmState conv_lstm_zero_state(GraphBuilder& b, int64_t channels, int64_t h, int64_t w) {
  return {b.zeros({channels, h, w}), b.zeros({channels, h, w})};
}

}  // namespace mtlab
