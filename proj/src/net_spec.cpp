#include <charconv>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "fcn/net.hpp"

namespace fcn {

std::string kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::kInput: return "input";
    case NodeKind::kConv: return "conv";
    case NodeKind::kRelu: return "relu";
    case NodeKind::kPool: return "pool";
    case NodeKind::kFc: return "fc";
    case NodeKind::kDeconv: return "deconv";
    case NodeKind::kFuse: return "fuse";
    case NodeKind::kCrop: return "crop";
    case NodeKind::kPadDense: return "pad_dense";
  }
  return "?";
}

namespace {

std::optional<NodeKind> kind_from_name(const std::string& s) {
  if (s == "input") return NodeKind::kInput;
  if (s == "conv") return NodeKind::kConv;
  if (s == "relu") return NodeKind::kRelu;
  if (s == "pool") return NodeKind::kPool;
  if (s == "fc") return NodeKind::kFc;
  if (s == "deconv") return NodeKind::kDeconv;
  if (s == "fuse") return NodeKind::kFuse;
  if (s == "crop") return NodeKind::kCrop;
  return std::nullopt;
}

bool has_params(NodeKind k) {
  return k == NodeKind::kConv || k == NodeKind::kFc || k == NodeKind::kDeconv;
}

int parse_int(const std::string& tok, int line_no, const char* field) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError("net line " + std::to_string(line_no) + ": bad " + field +
                     " '" + tok + "'");
  return v;
}

double parse_gauss_sd(const std::string& init) {
  double sd = 0;
  try {
    size_t pos = 0;
    sd = std::stod(init.substr(6), &pos);
    if (pos != init.size() - 6) sd = -1;
  } catch (...) {
    sd = -1;
  }
  if (sd <= 0) throw ParseError("bad gauss init '" + init + "'");
  return sd;
}

}  // namespace

LayerGeom NodeSpec::geom() const {
  switch (kind) {
    case NodeKind::kConv: return conv_geom(k, s, p);
    case NodeKind::kFc: return conv_geom(k, 1, 0);
    case NodeKind::kPool: {
      LayerGeom g = pool_geom(k, s, p);
      g.dilation = dilation;
      return g;
    }
    case NodeKind::kDeconv: return deconv_geom(k, s, p);
    default: return elementwise_geom();
  }
}

int NetSpec::find(const std::string& name) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].name == name) return int(i);
  return -1;
}

int NetSpec::input_index() const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].kind == NodeKind::kInput) return int(i);
  throw DataError("net has no input node");
}

std::vector<int> NetSpec::output_indices() const {
  std::vector<bool> consumed(nodes.size(), false);
  for (const NodeSpec& n : nodes)
    for (const std::string& in : n.inputs) consumed[find(in)] = true;
  std::vector<int> out;
  for (size_t i = 0; i < nodes.size(); ++i)
    if (!consumed[i]) out.push_back(int(i));
  return out;
}

int NetSpec::class_count() const {
  std::vector<int> outs = output_indices();
  if (outs.empty()) throw DataError("net has no output node");
  return nodes[outs.front()].out_ch;
}

void NetSpec::validate() const {
  if (nodes.empty()) throw DataError("empty net");
  std::set<std::string> names;
  int input_count = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const NodeSpec& n = nodes[i];
    const std::string where = "node '" + n.name + "'";
    if (n.name.empty()) throw DataError("unnamed node at position " + std::to_string(i));
    if (!names.insert(n.name).second) throw DataError("duplicate " + where);

    size_t want_inputs =
        n.kind == NodeKind::kInput ? 0
        : (n.kind == NodeKind::kFuse || n.kind == NodeKind::kCrop) ? 2
                                                                   : 1;
    if (n.inputs.size() != want_inputs)
      throw DataError(where + ": " + kind_name(n.kind) + " takes " +
                      std::to_string(want_inputs) + " inputs, got " +
                      std::to_string(n.inputs.size()));
    std::vector<int> in_idx;
    for (const std::string& in : n.inputs) {
      int j = find(in);
      if (j < 0 || size_t(j) >= i)
        throw DataError(where + ": input '" + in + "' does not precede it");
      in_idx.push_back(j);
    }

    if (n.out_ch < 1) throw DataError(where + ": out_ch must be positive");
    auto up_ch = [&](int slot) { return nodes[in_idx[slot]].out_ch; };
    switch (n.kind) {
      case NodeKind::kInput:
        ++input_count;
        break;
      case NodeKind::kConv:
      case NodeKind::kFc:
      case NodeKind::kDeconv:
        if (n.in_ch != up_ch(0))
          throw DataError(where + ": expects " + std::to_string(n.in_ch) +
                          " channels but '" + n.inputs[0] + "' yields " +
                          std::to_string(up_ch(0)));
        if (n.k < 1 || n.s < 1 || n.p < 0)
          throw DataError(where + ": bad geometry");
        if (n.kind == NodeKind::kFc && (n.s != 1 || n.p != 0))
          throw DataError(where + ": fc requires s=1 p=0");
        break;
      case NodeKind::kRelu:
      case NodeKind::kPool:
        if (n.in_ch != up_ch(0) || n.out_ch != up_ch(0))
          throw DataError(where + ": channel count must pass through, upstream has " +
                          std::to_string(up_ch(0)));
        if (n.kind == NodeKind::kPool && (n.k < 1 || n.s < 1 || n.p < 0))
          throw DataError(where + ": bad geometry");
        break;
      case NodeKind::kFuse:
        if (up_ch(0) != up_ch(1))
          throw DataError(where + ": fused branches carry " + std::to_string(up_ch(0)) +
                          " vs " + std::to_string(up_ch(1)) + " channels");
        if (n.out_ch != up_ch(0) || n.in_ch != up_ch(0))
          throw DataError(where + ": fuse passes channels through");
        break;
      case NodeKind::kCrop:
        if (n.out_ch != up_ch(0) || n.in_ch != up_ch(0))
          throw DataError(where + ": crop passes channels through");
        break;
      case NodeKind::kPadDense:
        break;
    }

    if (has_params(n.kind)) {
      if (n.init.rfind("gauss:", 0) == 0) {
        parse_gauss_sd(n.init);
      } else if (n.init == "bilinear") {
        if (n.kind != NodeKind::kDeconv)
          throw DataError(where + ": bilinear init is deconv-only");
        if (n.in_ch != n.out_ch || n.k != 2 * n.s - (n.s % 2))
          throw DataError(where + ": bilinear init needs equal channels and k=2f-(f%2)");
      } else if (n.init == "identity") {
        if (n.in_ch != n.out_ch)
          throw DataError(where + ": identity init needs equal channels");
      } else if (n.init != "zero" && n.init != "none") {
        throw DataError(where + ": unknown init '" + n.init + "'");
      }
    } else {
      if (n.init != "none")
        throw DataError(where + ": " + kind_name(n.kind) + " takes no init");
      if (n.learnable)
        throw DataError(where + ": " + kind_name(n.kind) + " has no parameters to learn");
    }
  }
  if (input_count != 1)
    throw DataError("net must have exactly one input node, found " +
                    std::to_string(input_count));
  if (output_indices().empty())
    throw DataError("net has no output node (a cycle or everything consumed)");
  node_summaries(*this);  // fusion stride agreement
}

NetSpec parse_net(const std::string& text) {
  NetSpec spec;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (size_t hash = line.find('#'); hash != std::string::npos)
      line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok{std::istream_iterator<std::string>(ls),
                                 std::istream_iterator<std::string>()};
    if (tok.empty()) continue;
    if (tok.size() < 9)
      throw ParseError("net line " + std::to_string(line_no) +
                       ": expected 'name kind k s p in_ch out_ch init learnable inputs...'");
    NodeSpec n;
    n.name = tok[0];
    auto kind = kind_from_name(tok[1]);
    if (!kind)
      throw ParseError("net line " + std::to_string(line_no) + ": unknown kind '" +
                       tok[1] + "'");
    n.kind = *kind;
    n.k = parse_int(tok[2], line_no, "k");
    n.s = parse_int(tok[3], line_no, "s");
    n.p = parse_int(tok[4], line_no, "p");
    n.in_ch = parse_int(tok[5], line_no, "in_ch");
    n.out_ch = parse_int(tok[6], line_no, "out_ch");
    n.init = tok[7];
    if (tok[8] != "0" && tok[8] != "1")
      throw ParseError("net line " + std::to_string(line_no) + ": learnable must be 0 or 1");
    n.learnable = tok[8] == "1";
    n.inputs.assign(tok.begin() + 9, tok.end());
    spec.nodes.push_back(std::move(n));
  }
  spec.validate();
  return spec;
}

NetSpec load_net(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open net description " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_net(ss.str());
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string serialize_net(const NetSpec& spec) {
  std::ostringstream out;
  out << "# name kind k s p in_ch out_ch init learnable inputs...\n";
  for (const NodeSpec& n : spec.nodes) {
    if (n.kind == NodeKind::kPadDense || n.dilation != 1)
      throw DataError("node '" + n.name + "' has no text form");
    out << n.name << " " << kind_name(n.kind) << " " << n.k << " " << n.s << " "
        << n.p << " " << n.in_ch << " " << n.out_ch << " " << n.init << " "
        << (n.learnable ? 1 : 0);
    for (const std::string& in : n.inputs) out << " " << in;
    out << "\n";
  }
  return out.str();
}

std::vector<GeomSummary> node_summaries(const NetSpec& spec) {
  std::vector<GeomSummary> out(spec.nodes.size());
  for (size_t i = 0; i < spec.nodes.size(); ++i) {
    const NodeSpec& n = spec.nodes[i];
    if (n.kind == NodeKind::kInput) {
      out[i] = GeomSummary{};
      continue;
    }
    std::vector<const GeomSummary*> ups;
    for (const std::string& in : n.inputs) ups.push_back(&out[spec.find(in)]);
    const GeomSummary* base = ups[0];
    if (n.kind == NodeKind::kFuse) {
      if (ups[0]->S != ups[1]->S)
        throw DataError("node '" + n.name + "': fused branches have strides " +
                        ups[0]->S.str() + " and " + ups[1]->S.str() +
                        ", fusion requires equal strides");
      // Wider receptive field wins the report.
      Rational d = ups[0]->K - ups[1]->K;
      base = d.num >= 0 ? ups[0] : ups[1];
    }
    out[i] = compose(summarize(n.geom()), *base);
  }
  return out;
}

}  // namespace fcn
