/** Declarative figure styling; every field can be overridden from JSON. */

export interface Style {
  width: number;
  height: number;
  marginLeft: number;
  marginRight: number;
  marginTop: number;
  marginBottom: number;
  background: string;
  axisColor: string;
  gridColor: string;
  textColor: string;
  fontFamily: string;
  fontSize: number;
  titleSize: number;
  lineWidth: number;
  colors: string[];
  dashPattern: number[];
  markerColor: string;
  markerSize: number;
  heatLow: [number, number, number];
  heatHigh: [number, number, number];
  panelGap: number;
}

export const defaultStyle: Style = {
  width: 880,
  height: 560,
  marginLeft: 86,
  marginRight: 24,
  marginTop: 46,
  marginBottom: 60,
  background: "#ffffff",
  axisColor: "#222222",
  gridColor: "#dddddd",
  textColor: "#222222",
  fontFamily: "DejaVu Sans, sans-serif",
  fontSize: 13,
  titleSize: 16,
  lineWidth: 2,
  colors: ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"],
  dashPattern: [7, 5],
  markerColor: "#0033cc",
  markerSize: 6,
  heatLow: [252, 252, 240],
  heatHigh: [165, 15, 21],
  panelGap: 40,
};

export function mergeStyle(partial?: Partial<Style>): Style {
  return { ...defaultStyle, ...(partial ?? {}) };
}
