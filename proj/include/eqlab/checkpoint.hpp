#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "eqlab/classic.hpp"
#include "eqlab/cnn.hpp"
#include "eqlab/snn.hpp"
#include "eqlab/vae.hpp"

namespace eqlab::ckpt {

// Text format, one item per line:
//
//   eqlab-model v1
//   kind <name>
//   meta <key> <value...>
//   tensor <name> <rank> <dims...>
//   <values, whitespace separated, shortest round-trip decimal>
//   end
//
// Complex tensors carry a trailing dimension of 2 (re, im).

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

struct Checkpoint {
    std::string kind;
    std::map<std::string, std::string> meta;
    std::vector<Tensor> tensors;

    const Tensor& tensor(const std::string& name) const;
    const std::string& get(const std::string& key) const;
};

void save(std::ostream& os, const Checkpoint& c);
/// Throws ParameterError on a malformed or mismatched file.
Checkpoint load(std::istream& is);

Checkpoint from_ffe(const RVec& taps);
RVec to_ffe(const Checkpoint& c);

Checkpoint from_volterra(const classic::VolterraModel& m);
classic::VolterraModel to_volterra(const Checkpoint& c);

Checkpoint from_butterfly(const classic::ButterflyFir& w);
classic::ButterflyFir to_butterfly(const Checkpoint& c);

Checkpoint from_vae(const vae::VaeLeModel& m);
vae::VaeLeModel to_vae(const Checkpoint& c);

Checkpoint from_cnn(const cnn::CnnModel<float>& m);
cnn::CnnModel<float> to_cnn(const Checkpoint& c);

Checkpoint from_snn(const snn::SnnModel& m);
snn::SnnModel to_snn(const Checkpoint& c);

} // namespace eqlab::ckpt
