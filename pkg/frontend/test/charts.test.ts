import { describe, expect, it } from "vitest";

import { attentionChart, comparisonLineChart, deltaBarChart, formatCount } from "../src/charts.js";

describe("delta bar chart", () => {
  it("embeds each region's delta verbatim as a data attribute", () => {
    const svg = deltaBarChart([
      { region: "R00", delta: -10.5 },
      { region: "R01", delta: 0 },
      { region: "R02", delta: 3.25 },
    ]);
    expect(svg).toContain('data-region="R00" data-delta="-10.5"');
    expect(svg).toContain('data-region="R01" data-delta="0"');
    expect(svg).toContain('data-region="R02" data-delta="3.25"');
  });

  it("renders all-zero bars with zero width", () => {
    const svg = deltaBarChart([
      { region: "A", delta: 0 },
      { region: "B", delta: 0 },
    ]);
    const widths = [...svg.matchAll(/width="([\d.]+)" height/g)].map((m) => Number(m[1]));
    expect(widths).toEqual([0, 0]);
  });

  it("escapes region names", () => {
    const svg = deltaBarChart([{ region: "<evil>", delta: 1 }]);
    expect(svg).not.toContain("<evil>");
    expect(svg).toContain("&lt;evil&gt;");
  });
});

describe("comparison line chart", () => {
  it("draws baseline and scenario polylines", () => {
    const svg = comparisonLineChart(
      [
        { x: "2021-02-28", baseline: 10, scenario: 8 },
        { x: "2021-03-07", baseline: 12, scenario: 9 },
      ],
      "epi-week totals",
    );
    expect((svg.match(/<polyline/g) ?? []).length).toBe(2);
    expect(svg).toContain("2021-02-28");
    expect(svg).toContain("2021-03-07");
  });

  it("handles an empty series without blowing up", () => {
    expect(comparisonLineChart([], "x")).toContain("no complete epi-weeks");
  });
});

describe("attention chart", () => {
  it("draws one mark per window position", () => {
    const k = 15;
    const points = Array.from({ length: k }, (_, i) => ({
      offset: i - k,
      caseWeight: 1 / k,
      mobilityWeight: 1 / k,
    }));
    const svg = attentionChart(points);
    expect((svg.match(/<circle/g) ?? []).length).toBe(k);
    expect(svg).toContain('data-offset="-15"');
    expect(svg).toContain("day -15");
    expect(svg).toContain("day -1");
  });
});

describe("count formatting", () => {
  it("uses sign and compact units", () => {
    expect(formatCount(-1250)).toBe("−1.3k");
    expect(formatCount(0)).toBe("0");
    expect(formatCount(2500000)).toBe("+2.50M");
  });
});
