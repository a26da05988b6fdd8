#include "varsel/dot_export.hpp"

#include <set>
#include <sstream>

namespace varsel {

namespace {

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\\\"";
        else out += ch;
    }
    out += "\"";
    return out;
}

}  // namespace

std::string export_model_dot(const Model& m, ModelDotMode mode, SvId pathway_sv) {
    std::set<SvId> included;
    switch (mode) {
        case ModelDotMode::Full:
            for (const auto& b : m.bsvs()) included.insert(b.id);
            for (const auto& d : m.dsvs()) included.insert(d.id);
            for (const auto& c : m.csvs()) included.insert(c.id);
            break;
        case ModelDotMode::ReliableOnly:
            for (const auto& c : m.csvs()) {
                if (c.flag != Flag::Unconditional) continue;
                included.insert(c.id);
                for (SvId s : c.pos_sources) included.insert(s);
                for (SvId s : c.neg_sources) included.insert(s);
                for (SvId t : c.targets) included.insert(t);
            }
            for (const auto& d : m.dsvs())
                if (included.count(d.id) != 0) included.insert(d.owner);
            break;
        case ModelDotMode::PathwayOf: {
            if (!m.contains(pathway_sv)) throw ModelError("unknown SV for pathway export");
            std::vector<SvId> stack;
            if (m.kind_of(pathway_sv) == SvKind::Bsv) {
                const auto& b = m.bsv(pathway_sv);
                included.insert(b.id);
                if (b.dsv_activation != kNoSv) stack.push_back(b.dsv_activation);
                if (b.dsv_deactivation != kNoSv) stack.push_back(b.dsv_deactivation);
            } else {
                stack.push_back(pathway_sv);
            }
            while (!stack.empty()) {
                SvId cur = stack.back();
                stack.pop_back();
                if (!included.insert(cur).second) continue;
                if (m.kind_of(cur) == SvKind::Csv) {
                    const auto& c = m.csv(cur);
                    for (SvId s : c.pos_sources) included.insert(s);
                    for (SvId s : c.neg_sources) included.insert(s);
                }
                for (SvId up : m.conditioners_of(cur)) stack.push_back(up);
            }
            break;
        }
    }

    struct DotEdge {
        SvId from, to;
        const char* attrs;
    };
    std::vector<DotEdge> edges;
    for (const auto& c : m.csvs()) {
        if (included.count(c.id) == 0) continue;
        for (SvId s : c.pos_sources)
            if (included.count(s) != 0) edges.push_back({s, c.id, "color=gray"});
        for (SvId s : c.neg_sources)
            if (included.count(s) != 0)
                edges.push_back({s, c.id, "color=gray style=dashed arrowhead=tee"});
        for (SvId t : c.targets)
            if (included.count(t) != 0) edges.push_back({c.id, t, "color=black"});
    }
    // Disconnected SVs are cut; owner links are drawn only for DSVs that
    // participate in the conditioning structure.
    std::set<SvId> touched;
    for (const auto& e : edges) {
        touched.insert(e.from);
        touched.insert(e.to);
    }
    for (const auto& d : m.dsvs()) {
        if (touched.count(d.id) == 0 || included.count(d.owner) == 0) continue;
        edges.push_back({d.owner, d.id, "color=gray style=dotted arrowhead=none"});
        touched.insert(d.owner);
    }

    std::ostringstream out;
    out << "digraph model {\n  rankdir=BT;\n  node [style=filled];\n";
    for (SvId id : included) {
        if (touched.count(id) == 0) continue;
        std::string attrs;
        switch (m.kind_of(id)) {
            case SvKind::Bsv: attrs = "shape=box fillcolor=burlywood"; break;
            case SvKind::Dsv: attrs = "shape=ellipse fillcolor=lightblue"; break;
            default: {
                const auto& c = m.csv(id);
                attrs = "shape=diamond fillcolor=lightgray";
                if (c.flag == Flag::Unconditional) attrs += " penwidth=2.5 fontsize=18";
                break;
            }
        }
        out << "  " << quoted(m.name_of(id)) << " [" << attrs << "];\n";
    }
    for (const auto& e : edges) {
        if (touched.count(e.from) == 0 || touched.count(e.to) == 0) continue;
        out << "  " << quoted(m.name_of(e.from)) << " -> " << quoted(m.name_of(e.to)) << " ["
            << e.attrs << "];\n";
    }
    out << "}\n";
    return out.str();
}

std::string export_an_dot(const ActionNetwork& an) {
    std::ostringstream out;
    out << "digraph action_network {\n  rankdir=BT;\n  node [shape=box];\n";
    for (std::size_t i = 0; i < an.nodes.size(); ++i) {
        const auto& n = an.nodes[i];
        out << "  n" << i << " [label=" << quoted(n.label);
        if (n.satisfied_by_current) out << " peripheries=2 style=filled fillcolor=palegreen";
        if (n.dead_end) out << " style=filled fillcolor=gray85 fontcolor=gray40";
        out << "];\n";
    }
    for (const auto& e : an.edges) {
        const char* attrs = "";
        switch (e.kind) {
            case EdgeKind::Conditioning: attrs = "color=black"; break;
            case EdgeKind::Source: attrs = "color=gray"; break;
            case EdgeKind::Precondition: attrs = "color=gray style=dashed"; break;
            case EdgeKind::Constituent: attrs = "color=darkgreen style=dashed"; break;
            case EdgeKind::Constituency: attrs = "color=darkgreen"; break;
        }
        out << "  n" << e.from << " -> n" << e.to << " [" << attrs << "];\n";
    }
    out << "}\n";
    return out.str();
}

namespace {

void emit_ean(const Ean& ean, std::ostringstream& out, bool nested, int& cluster_seq,
              const std::string& node_prefix) {
    std::map<AnKey, std::string> ids;
    int seq = 0;
    for (const auto& [k, label] : ean.labels) {
        ids[k] = node_prefix + "n" + std::to_string(seq++);
        out << "  " << ids[k] << " [label=" << quoted(label) << " shape=box];\n";
    }
    int edge_seq = 0;
    for (const auto& e : ean.edges) {
        out << "  " << ids.at(e.from) << " -> " << ids.at(e.to);
        if (e.encapsulated)
            out << " [style=bold penwidth=2 label=" << quoted(std::to_string(e.alternatives.size()) + " alt") << "]";
        out << ";\n";
        if (e.encapsulated && nested) {
            int alt_seq = 0;
            for (const auto& alt : e.alternatives) {
                out << "  subgraph cluster_" << cluster_seq++ << " {\n"
                    << "    label=" << quoted(ean.labels.at(e.from) + " => " + ean.labels.at(e.to))
                    << ";\n    style=dashed;\n";
                std::ostringstream inner;
                int inner_cluster = 0;
                emit_ean(alt, inner, false, inner_cluster,
                         node_prefix + "e" + std::to_string(edge_seq) + "a" +
                             std::to_string(alt_seq++) + "_");
                out << inner.str() << "  }\n";
            }
        }
        ++edge_seq;
    }
}

}  // namespace

std::string export_ean_dot(const Ean& ean, bool nested_clusters) {
    std::ostringstream out;
    out << "digraph encapsulated_an {\n  rankdir=BT;\n";
    int cluster_seq = 0;
    emit_ean(ean, out, nested_clusters, cluster_seq, "");
    out << "}\n";
    return out.str();
}

}  // namespace varsel
