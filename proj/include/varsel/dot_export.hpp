#pragma once

#include <string>

#include "varsel/encapsulation.hpp"
#include "varsel/model.hpp"
#include "varsel/planner.hpp"

namespace varsel {

enum class ModelDotMode { Full, ReliableOnly, PathwayOf };

// Model graph: BSVs brown, DSVs blue, CSVs gray; gray edges for sources,
// black for conditioning. ReliableOnly keeps unconditional-CSV pathways;
// PathwayOf keeps the upstream cone of one SV. SVs left without any edge
// are cut.
std::string export_model_dot(const Model& m, ModelDotMode mode, SvId pathway_sv = kNoSv);

std::string export_an_dot(const ActionNetwork& an);

// Encapsulated edges are bold; with `nested_clusters` each encapsulated
// edge's alternatives appear as clustered subgraphs.
std::string export_ean_dot(const Ean& ean, bool nested_clusters = false);

}  // namespace varsel
