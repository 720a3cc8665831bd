// SPDX-License-Identifier: Apache-2.0
#include <iomanip>
#include <ostream>
#include <string>

#include "commands/commands.hpp"
#include "visnet/arch_spec.hpp"
#include "visnet/error.hpp"

namespace visnet::cli {
namespace {

const ReferenceRow* reference_for(std::string_view name) {
  for (const auto& r : kReferenceCounts) {
    if (r.component == name) return &r;
  }
  return nullptr;
}

// 4733444 -> "4,733,444".
std::string grouped(std::uint64_t n) {
  std::string digits = std::to_string(n), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

void row(std::ostream& out, std::string_view name, std::uint64_t count, std::string ref, std::string_view status) {
  out << std::left << std::setw(16) << name << std::right << std::setw(14) << grouped(count) << std::setw(14) << ref
      << "  " << status << '\n';
}

}  // namespace

int cmd_param_count(const ParamCountOptions& opts, std::ostream& out, std::ostream& err) {
  ArchSpec spec;
  try {
    spec = opts.spec_path.empty() ? default_visnet_arch() : load_arch_spec(opts.spec_path);
  } catch (const Error& e) {
    err << "error: " << (opts.spec_path.empty() ? "" : opts.spec_path + ": ") << e.what() << '\n';
    return kExitInput;
  }
  const ParameterTable table = count_parameters(spec);

  out << std::left << std::setw(16) << "component" << std::right << std::setw(14) << "parameters" << std::setw(14)
      << "reference" << "  status\n";
  bool mismatch = false;
  for (const auto& r : table.rows) {
    const ReferenceRow* ref = reference_for(r.name);
    if (!ref) {
      row(out, r.name, r.parameters, "-", "-");
      continue;
    }
    std::string_view status = "ok";
    if (r.parameters != ref->parameters) {
      status = ref->derivable ? "MISMATCH" : "DISCREPANCY";
      mismatch |= ref->derivable;
    }
    row(out, r.name, r.parameters, grouped(ref->parameters), status);
  }
  for (const auto& ref : kReferenceCounts) {
    if (!table.find(ref.component) && ref.derivable) {
      row(out, ref.component, 0, grouped(ref.parameters), "MISSING");
      mismatch = true;
    }
  }
  row(out, "total", table.total, grouped(kReferenceTotal),
      table.total == kReferenceTotal ? "ok" : "DISCREPANCY");

  if (opts.assert_reference && mismatch) {
    err << "error: derivable component counts differ from the reference table\n";
    return kExitAssertion;
  }
  return kExitOk;
}

}  // namespace visnet::cli
