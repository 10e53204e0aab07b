import { describe, expect, it } from "vitest";

import { chartSvg, polylinePoints } from "../src/chart.js";

describe("polylinePoints", () => {
  it("maps the minimum to the floor and the maximum to the ceiling", () => {
    const pts = polylinePoints([0, 1], 0, 1, 100, 100, 10).split(" ");
    expect(pts[0]).toBe("10.0,90.0"); // lo at left/bottom of the plot box
    expect(pts[1]).toBe("90.0,10.0"); // hi at right/top
  });

  it("spaces points evenly along x", () => {
    const xs = polylinePoints([0, 0.5, 1], 0, 1, 100, 100, 10)
      .split(" ")
      .map((p) => Number(p.split(",")[0]));
    expect(xs).toEqual([10, 50, 90]);
  });

  it("keeps a flat series finite", () => {
    const pts = polylinePoints([0.7, 0.7, 0.7], 0.7, 0.7, 100, 100, 10);
    expect(pts).toBe("10.0,90.0 50.0,90.0 90.0,90.0");
  });

  it("is empty for an empty series", () => {
    expect(polylinePoints([], 0, 1)).toBe("");
  });
});

describe("chartSvg", () => {
  it("draws one polyline per series plus a legend", () => {
    const svg = chartSvg(
      [
        { name: "nDCG", values: [0.3, 0.9], color: "#123456" },
        { name: "smoothed", values: [0.4, 0.6], color: "#654321" },
      ],
      "nDCG per iteration",
    );
    expect(svg.match(/<polyline/g)).toHaveLength(2);
    expect(svg).toContain("nDCG");
    expect(svg).toContain("smoothed");
    expect(svg).toContain('aria-label="nDCG per iteration"');
  });

  it("renders nothing at all for no data", () => {
    expect(chartSvg([], "x")).toBe("");
  });
});
