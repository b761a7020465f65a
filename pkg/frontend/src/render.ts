/** Canvas rendering of the chart models. Pixel output is deterministic. */

import { Canvas, createCanvas, SKRSContext2D } from "@napi-rs/canvas";

import { Fig4Model, LineChart, Series } from "./model";
import { Style } from "./style";

interface Frame {
  x0: number;
  y0: number;
  w: number;
  h: number;
}

function linearTicks(lo: number, hi: number, target = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = Math.pow(10, Math.floor(Math.log10(span / target)));
  const step = [1, 2, 5, 10].map((m) => m * step0).find((s) => span / s <= target) ?? step0 * 10;
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12 * span; t += step) {
    ticks.push(Number(t.toFixed(12)));
  }
  return ticks;
}

function logTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.ceil(Math.log10(lo) - 1e-9); Math.pow(10, e) <= hi * (1 + 1e-9); e++) {
    ticks.push(Math.pow(10, e));
  }
  return ticks.length ? ticks : [lo];
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 0.01 && a < 10000) {
    return Number(v.toPrecision(4)).toString();
  }
  return v.toExponential(0).replace("+", "");
}

function drawFrame(ctx: SKRSContext2D, frame: Frame, style: Style) {
  ctx.strokeStyle = style.axisColor;
  ctx.lineWidth = 1;
  ctx.strokeRect(frame.x0, frame.y0, frame.w, frame.h);
}

function drawTitleAndLabels(
  ctx: SKRSContext2D,
  frame: Frame,
  style: Style,
  title: string,
  xLabel: string,
  yLabel: string,
) {
  ctx.fillStyle = style.textColor;
  ctx.font = `${style.titleSize}px ${style.fontFamily}`;
  ctx.textAlign = "center";
  ctx.fillText(title, frame.x0 + frame.w / 2, frame.y0 - 14);
  ctx.font = `${style.fontSize}px ${style.fontFamily}`;
  ctx.fillText(xLabel, frame.x0 + frame.w / 2, frame.y0 + frame.h + 42);
  ctx.save();
  ctx.translate(frame.x0 - 62, frame.y0 + frame.h / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(yLabel, 0, 0);
  ctx.restore();
}

export function renderLineChart(chart: LineChart, style: Style): Canvas {
  const canvas = createCanvas(style.width, style.height);
  const ctx = canvas.getContext("2d");
  ctx.fillStyle = style.background;
  ctx.fillRect(0, 0, style.width, style.height);
  const frame: Frame = {
    x0: style.marginLeft,
    y0: style.marginTop,
    w: style.width - style.marginLeft - style.marginRight,
    h: style.height - style.marginTop - style.marginBottom,
  };
  drawTitleAndLabels(ctx, frame, style, chart.title, chart.xLabel, chart.yLabel);

  const xs = chart.series.flatMap((s) => s.x).filter(Number.isFinite);
  const ys = chart.series
    .flatMap((s) => s.y)
    .filter((v) => Number.isFinite(v) && (!chart.logY || v > 0));
  if (xs.length === 0 || ys.length === 0) {
    drawFrame(ctx, frame, style); // nothing to plot: empty axes
    return canvas;
  }

  let xLo = Math.min(...xs);
  let xHi = Math.max(...xs);
  if (xLo === xHi) {
    xLo -= 1;
    xHi += 1;
  }
  let yLo = Math.min(...ys);
  let yHi = Math.max(...ys);
  if (chart.logY) {
    yLo /= 1.5;
    yHi *= 1.5;
  } else {
    const pad = 0.05 * (yHi - yLo || 1);
    yLo -= pad;
    yHi += pad;
  }
  const px = (x: number) => frame.x0 + ((x - xLo) / (xHi - xLo)) * frame.w;
  const py = (y: number) =>
    chart.logY
      ? frame.y0 + frame.h - ((Math.log10(y) - Math.log10(yLo)) / (Math.log10(yHi) - Math.log10(yLo))) * frame.h
      : frame.y0 + frame.h - ((y - yLo) / (yHi - yLo)) * frame.h;

  ctx.font = `${style.fontSize}px ${style.fontFamily}`;
  for (const t of linearTicks(xLo, xHi)) {
    ctx.strokeStyle = style.gridColor;
    ctx.beginPath();
    ctx.moveTo(px(t), frame.y0);
    ctx.lineTo(px(t), frame.y0 + frame.h);
    ctx.stroke();
    ctx.fillStyle = style.textColor;
    ctx.textAlign = "center";
    ctx.fillText(fmt(t), px(t), frame.y0 + frame.h + 18);
  }
  const yTicks = chart.logY ? logTicks(yLo, yHi) : linearTicks(yLo, yHi);
  for (const t of yTicks) {
    ctx.strokeStyle = style.gridColor;
    ctx.beginPath();
    ctx.moveTo(frame.x0, py(t));
    ctx.lineTo(frame.x0 + frame.w, py(t));
    ctx.stroke();
    ctx.fillStyle = style.textColor;
    ctx.textAlign = "right";
    ctx.fillText(fmt(t), frame.x0 - 6, py(t) + 4);
  }
  drawFrame(ctx, frame, style);

  chart.series.forEach((s: Series, i: number) => {
    ctx.strokeStyle = style.colors[i % style.colors.length];
    ctx.lineWidth = style.lineWidth;
    ctx.setLineDash(s.dashed ? style.dashPattern : []);
    ctx.beginPath();
    let pen = false;
    for (let k = 0; k < s.x.length; k++) {
      const ok = Number.isFinite(s.y[k]) && (!chart.logY || s.y[k] > 0);
      if (!ok) {
        pen = false;
        continue;
      }
      if (pen) ctx.lineTo(px(s.x[k]), py(s.y[k]));
      else ctx.moveTo(px(s.x[k]), py(s.y[k]));
      pen = true;
    }
    ctx.stroke();
    ctx.setLineDash([]);
  });

  // legend
  ctx.textAlign = "left";
  const lx = frame.x0 + frame.w - 190;
  let ly = frame.y0 + 16;
  chart.series.forEach((s: Series, i: number) => {
    ctx.strokeStyle = style.colors[i % style.colors.length];
    ctx.lineWidth = style.lineWidth;
    ctx.setLineDash(s.dashed ? style.dashPattern : []);
    ctx.beginPath();
    ctx.moveTo(lx, ly - 4);
    ctx.lineTo(lx + 26, ly - 4);
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = style.textColor;
    ctx.fillText(s.label, lx + 32, ly);
    ly += 17;
  });
  return canvas;
}

function heatColor(v: number, style: Style): string {
  const t = Math.min(Math.max(v, 0), 1);
  const c = style.heatLow.map((lo, i) => Math.round(lo + t * (style.heatHigh[i] - lo)));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

export function renderFig4(model: Fig4Model, style: Style): Canvas {
  const n = Math.max(model.panels.length, 1);
  const width = style.width;
  const canvas = createCanvas(width, style.height);
  const ctx = canvas.getContext("2d");
  ctx.fillStyle = style.background;
  ctx.fillRect(0, 0, width, style.height);

  ctx.fillStyle = style.textColor;
  ctx.font = `${style.titleSize}px ${style.fontFamily}`;
  ctx.textAlign = "center";
  ctx.fillText(model.title, width / 2, 24);

  const finite = model.panels.flatMap((p) => p.cells.flat()).filter(Number.isFinite);
  const vMax = finite.length ? Math.max(...finite, 1e-300) : 1;

  const innerW = (width - style.marginLeft - style.marginRight - (n - 1) * style.panelGap) / n;
  model.panels.forEach((panel, pi) => {
    const frame: Frame = {
      x0: style.marginLeft + pi * (innerW + style.panelGap),
      y0: style.marginTop,
      w: innerW,
      h: style.height - style.marginTop - style.marginBottom,
    };
    ctx.font = `${style.fontSize}px ${style.fontFamily}`;
    ctx.fillStyle = style.textColor;
    ctx.textAlign = "center";
    ctx.fillText(panel.title, frame.x0 + frame.w / 2, frame.y0 - 8);

    const nr = panel.rValues.length;
    const np = panel.phiValues.length;
    if (nr && np) {
      const cw = frame.w / np;
      const chh = frame.h / nr;
      for (let ri = 0; ri < nr; ri++) {
        for (let piCol = 0; piCol < np; piCol++) {
          const v = panel.cells[ri][piCol];
          ctx.fillStyle = Number.isFinite(v) ? heatColor(v / vMax, style) : "#b8b8b8";
          // r grows upward: row 0 (smallest r) at the bottom
          ctx.fillRect(
            frame.x0 + piCol * cw,
            frame.y0 + frame.h - (ri + 1) * chh,
            Math.ceil(cw),
            Math.ceil(chh),
          );
        }
      }
      // true-position markers
      const phiLo = panel.phiValues[0];
      const phiHi = panel.phiValues[np - 1];
      const rLo = panel.rValues[0];
      const rHi = panel.rValues[nr - 1];
      for (const m of model.markers) {
        const fx = np > 1 ? (m.phiDeg - phiLo) / (phiHi - phiLo) : 0.5;
        const fy = nr > 1 ? (m.r - rLo) / (rHi - rLo) : 0.5;
        const cx = frame.x0 + fx * (frame.w - cw) + cw / 2;
        const cy = frame.y0 + frame.h - fy * (frame.h - chh) - chh / 2;
        ctx.strokeStyle = style.markerColor;
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.arc(cx, cy, style.markerSize, 0, 2 * Math.PI);
        ctx.stroke();
        ctx.beginPath();
        ctx.arc(cx, cy, 1.5, 0, 2 * Math.PI);
        ctx.fillStyle = style.markerColor;
        ctx.fill();
      }
      // axis tick labels
      ctx.fillStyle = style.textColor;
      ctx.textAlign = "center";
      for (const t of linearTicks(phiLo, phiHi, 5)) {
        const fx = np > 1 ? (t - phiLo) / (phiHi - phiLo) : 0.5;
        ctx.fillText(fmt(t), frame.x0 + fx * (frame.w - cw) + cw / 2, frame.y0 + frame.h + 18);
      }
      ctx.textAlign = "right";
      for (const t of linearTicks(rLo, rHi, 6)) {
        const fy = nr > 1 ? (t - rLo) / (rHi - rLo) : 0.5;
        ctx.fillText(fmt(t), frame.x0 - 6, frame.y0 + frame.h - fy * (frame.h - chh) - chh / 2 + 4);
      }
    }
    drawFrame(ctx, frame, style);
    ctx.textAlign = "center";
    ctx.fillStyle = style.textColor;
    ctx.fillText("azimuth [deg]", frame.x0 + frame.w / 2, frame.y0 + frame.h + 40);
  });
  ctx.save();
  ctx.translate(18, style.marginTop + (style.height - style.marginTop - style.marginBottom) / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.textAlign = "center";
  ctx.fillText("range [m]", 0, 0);
  ctx.restore();
  return canvas;
}
